// bbdrop command line front end. All logic lives in the library so the CLI
// can be exercised in-process by the tests.
#include <iostream>
#include <string>
#include <vector>

#include "bbdrop/pipeline.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return bbdrop::run_cli(args, std::cout, std::cerr);
}
