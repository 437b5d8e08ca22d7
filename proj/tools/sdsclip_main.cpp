#include <string>
#include <vector>

#include "sdsclip/cli/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return sdsclip::cli::dispatch(args);
}
