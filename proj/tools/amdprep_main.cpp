#include <iostream>

#include "amdprep/cli.hpp"

int main(int argc, char** argv) { return amdprep::run_cli(argc, argv, std::cout, std::cerr); }
