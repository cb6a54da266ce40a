#include <iostream>

#include "mpscan/cli.hpp"

int main(int argc, char** argv) { return mpscan::cli::run(argc, argv, std::cout, std::cerr); }
