#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) { return geodesy::cli::dispatch(argc, argv, std::cout, std::cerr); }
