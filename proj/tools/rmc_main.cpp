#include <string>
#include <vector>

#include "rmc/cli.hpp"

int main(int argc, char** argv) {
  return rmc::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
