#include "milgan/cli.hpp"

int main(int argc, char** argv) {
  return milgan::run_cli(argc, argv);
}
