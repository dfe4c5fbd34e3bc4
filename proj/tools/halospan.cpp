#include <iostream>

#include "halospan/cli.hpp"

int main(int argc, char** argv) { return halospan::cli::run(argc, argv, std::cout, std::cerr); }
