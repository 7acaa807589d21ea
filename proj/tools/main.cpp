#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) { return w1a8::cli::run(argc, argv, std::cout, std::cerr); }
