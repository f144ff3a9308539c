#include <iostream>
#include <string>
#include <vector>

#include "linkrate/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return linkrate::cli::run(args, std::cout, std::cerr);
}
