#include <iostream>

#include "ymflow/commands.hpp"
#include "ymflow/config.hpp"

int main(int argc, char** argv) {
  using namespace ymflow;
  try {
    const auto cfg = parse_config(std::vector<std::string>(argv + 1, argv + argc));
    return run_command(cfg, std::cerr, threads_from_env());
  } catch (const HelpRequested& h) {
    std::cout << h.text;
    return kSuccess;
  } catch (const std::exception& e) {
    std::cerr << "ymflow: " << e.what() << "\n";
    return exit_code_of(e);
  }
}
