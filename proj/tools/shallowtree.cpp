#include <iostream>

#include "shallowtree/cli.hpp"

int main(int argc, char** argv) { return shallowtree::cli::run(argc, argv, std::cout, std::cerr); }
