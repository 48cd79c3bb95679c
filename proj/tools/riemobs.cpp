#include "riemobs/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return riemobs::cli_main(argc, argv, std::cout, std::cerr); }
