#include <iostream>

#include "spacebyte/cli.h"

int main(int argc, char** argv) {
  return spacebyte::run_cli(argc, argv, std::cout, std::cerr);
}
