#include <iostream>

#include "tiresrag/cli.hpp"

int main(int argc, char** argv) { return tiresrag::cli::run(argc, argv, std::cout, std::cerr); }
