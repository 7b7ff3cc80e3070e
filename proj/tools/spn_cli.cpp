#include <iostream>
#include <string>
#include <vector>

#include "spn/commands.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return spn::run_cli(args, std::cout, std::cerr);
}
