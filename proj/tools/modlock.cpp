#include <iostream>

#include "modlock/cli.hpp"

int main(int argc, char** argv) { return modlock::cli::run(argc, argv, std::cout, std::cerr); }
