#include <iostream>

#include "aeckit/cli.hpp"

int main(int argc, char** argv) { return aeckit::cli::run(argc, argv, std::cout, std::cerr); }
