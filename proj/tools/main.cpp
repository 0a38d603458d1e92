#include <iostream>
#include <string>
#include <vector>

#include "uvnet/cli.hpp"

int main(int argc, char** argv) {
  return uvnet::cli::run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
