#include "hiergauss/commands.hpp"

#include <iostream>

int main(int argc, char** argv) {
    return hiergauss::cli::run(argc, argv, std::cout, std::cerr);
}
