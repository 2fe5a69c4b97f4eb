#include <iostream>
#include <string>
#include <vector>

#include "rsnet/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return rsnet::cli::run(args, std::cout, std::cerr);
}
