#include <iostream>
#include <string>
#include <vector>

#include "detlab/cli_io.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  return detlab::run_cli(args, std::cout, std::cerr);
}
