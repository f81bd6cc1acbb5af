#include <string>
#include <vector>

#include "shedopt/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return shedopt::run_cli(args);
}
