#include <iostream>

#include "mlve/cli.hpp"

int main(int argc, char** argv) { return mlve::dispatch(argc, argv, std::cout, std::cerr); }
