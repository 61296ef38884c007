#include <iostream>

#include "uvit/cli.hpp"

int main(int argc, char** argv) { return uvit::cli::run(argc, argv, std::cout, std::cerr); }
