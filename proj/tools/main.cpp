#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) { return bitgrad::cli::run(argc, argv, std::cout, std::cerr); }
