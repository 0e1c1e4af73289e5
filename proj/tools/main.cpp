#include <iostream>

#include "rrda/cli.hpp"

int main(int argc, char** argv) { return rrda::cli::run(argc, argv, std::cout, std::cerr); }
