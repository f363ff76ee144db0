#include <iostream>

#include "gnncomm/cli.hpp"

int main(int argc, char** argv) { return gnncomm::run_cli(argc, argv, std::cout, std::cerr); }
