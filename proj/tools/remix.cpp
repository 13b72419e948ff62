#include <iostream>

#include "remix/commands.hpp"

int main(int argc, char** argv) { return remix::run_cli(argc, argv, std::cout, std::cerr); }
