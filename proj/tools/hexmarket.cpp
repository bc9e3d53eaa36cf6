#include <iostream>
#include <string>
#include <vector>

#include "hexmarket/harness.hpp"
#include "selfcheck.hpp"

int main(int argc, char** argv) {
    const std::vector<std::string> args(argv + 1, argv + argc);
    return hexmarket::harness::cli(args, [](bool deep) { return hexmarket::selfcheck::run_all(deep, std::cout); });
}
