#include <iostream>
#include <string>
#include <vector>

#include "crowdbin/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return crowdbin::cli::run(args, std::cout, std::cerr);
}
