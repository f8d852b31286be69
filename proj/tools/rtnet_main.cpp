#include <iostream>

#include "rtnet/cli.hpp"

int main(int argc, char** argv) { return rtnet::cli::run(argc, argv, std::cout, std::cerr); }
