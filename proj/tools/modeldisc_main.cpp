#include <iostream>
#include <string>
#include <vector>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "modeldisc/cli.hpp"

int main(int argc, char** argv) {
  // stdout carries results (JSON for fit and evaluate); logs go to stderr
  spdlog::set_default_logger(spdlog::stderr_color_mt("modeldisc"));
  return modeldisc::run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
