#include <iostream>
#include <string>
#include <vector>

#include "asr/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return asr::cli::main(args, std::cout, std::cerr);
}
