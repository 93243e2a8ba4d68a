#include <msqnet/commands.hpp>

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return msqnet::run_command(args);
}
