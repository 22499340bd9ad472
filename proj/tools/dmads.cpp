#include <iostream>
#include <string>
#include <vector>

#include "dmads/cli.hpp"

int main(int argc, char** argv) {
    return dmads::run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
