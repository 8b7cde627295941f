#include <iostream>

#include "specgeo/cli.hpp"

int main(int argc, char** argv) { return specgeo::run_cli(argc, argv, std::cout, std::cerr); }
