#include <iostream>
#include <string>
#include <vector>

#include "tdpmix/cli.hpp"

int main(int argc, char** argv) {
  return tdpmix::cli_main(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
