#include <iostream>

#include "pafm/cli.hpp"

int main(int argc, char** argv) { return pafm::cli::run(argc, argv, std::cout, std::cerr); }
