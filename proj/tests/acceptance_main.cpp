// Acceptance suite: runs every criterion and prints one pass/fail line each.
// Exit code is the number of failing criteria.

#include <cstring>
#include <iostream>

#include "selfcheck.hpp"

int main(int argc, char** argv) {
    bool deep = true;
    for (int i = 1; i < argc; ++i)
        if (std::strcmp(argv[i], "--fast") == 0) deep = false;  // skip the desk-scale training criteria
    return hexmarket::selfcheck::run_all(deep, std::cout);
}
