#include <iostream>

#include "stopflow/cli.hpp"

int main(int argc, char** argv) { return stopflow::run(argc, argv, std::cout, std::cerr); }
