#include <iostream>

#include "mdnx/app/commands.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return mdnx::run_cli(args, std::cout, std::cerr);
}
