#include <iostream>

#include "binadapt/cli.hpp"

int main(int argc, char** argv) { return binadapt::cli::run(argc, argv, std::cout, std::cerr); }
