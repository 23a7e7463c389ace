#include <iostream>

#include "weld/cli.hpp"

int main(int argc, char** argv) { return weld::cli::run(argc, argv, std::cout, std::cerr); }
