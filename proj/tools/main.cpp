#include <iostream>

#include "cif/cli.hpp"

int main(int argc, char** argv) { return cif::run_cli(argc, argv, std::cout, std::cerr); }
