#include <iostream>

#include "pmash/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return pmash::run_cli(args, std::cout, std::cerr);
}
