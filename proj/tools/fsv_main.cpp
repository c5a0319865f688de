#include <iostream>

#include "fsv/cli.hpp"

int main(int argc, char** argv) { return fsv::cli::run_cli(argc, argv, std::cout, std::cerr); }
