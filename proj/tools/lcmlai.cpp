#include <iostream>

#include "lcmlai/cli.hpp"

int main(int argc, char** argv) {
  return lcmlai::run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
