#include <string>
#include <vector>

#include "mbmpc/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return mbmpc::cli::run(args);
}
