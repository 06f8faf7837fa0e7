#include <iostream>

#include "mdfl/cli.hpp"

int main(int argc, char** argv) {
  return mdfl::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
