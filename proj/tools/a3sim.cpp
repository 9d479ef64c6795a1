#include <iostream>

#include "a3sim/cli.hpp"

int main(int argc, char** argv) { return a3::run_cli(argc, argv, std::cout, std::cerr); }
