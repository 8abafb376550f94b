#include <iostream>

#include "thermsplat/cli.hpp"

int main(int argc, char** argv) { return thermsplat::cli::run(argc, argv, std::cout, std::cerr); }
