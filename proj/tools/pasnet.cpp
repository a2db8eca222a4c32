#include <iostream>

#include "pasnet/cli.hpp"

int main(int argc, char** argv) { return pasnet::run_cli(argc, argv, std::cout, std::cerr); }
