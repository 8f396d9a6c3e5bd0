#include <iostream>
#include <string>
#include <vector>

#include "synthaug/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return synthaug::run_cli(args, std::cout, std::cerr);
}
