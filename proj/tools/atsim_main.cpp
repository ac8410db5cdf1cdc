#include <iostream>
#include <string>
#include <vector>

#include "atsim/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return atsim::cli::run(args, std::cout, std::cerr);
}
