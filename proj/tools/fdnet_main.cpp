#include <string>
#include <vector>

#include "fdnet/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return fdnet::run_cli(args);
}
