#include <iostream>

#include "semdeblur/cli.hpp"

int main(int argc, char** argv) {
  return semdeblur::run_cli(argc, argv, std::cout, std::cerr);
}
