#include <iostream>

#include "commands.hpp"

int main(int argc, char** argv) { return tbd::cli::run(argc, argv, std::cout, std::cerr); }
