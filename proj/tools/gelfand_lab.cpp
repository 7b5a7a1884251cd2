#include "gelfand/runner.hpp"

int main(int argc, char** argv) { return gelfand::run_cli(argc, argv); }
