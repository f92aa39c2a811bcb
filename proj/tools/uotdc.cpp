#include "uotdc/cli.hpp"

int main(int argc, char** argv) {
  uotdc::configure_logging();
  return uotdc::run_cli(argc, argv);
}
