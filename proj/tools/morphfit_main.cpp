#include <iostream>

#include "morphfit/cli.hpp"

int main(int argc, char** argv) {
  return morphfit::run_cli(argc, argv, std::cout, std::cerr);
}
