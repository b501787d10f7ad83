#include <string>
#include <vector>

#include "lgpr/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return lgpr::cli::cmd_dispatch(std::move(args));
}
