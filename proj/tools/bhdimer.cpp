#include "bhdimer/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
    return bhdimer::cli::run_cli(argc, argv, std::cout, std::cerr);
}
