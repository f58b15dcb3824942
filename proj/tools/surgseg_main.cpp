#include "surgseg/cli.hpp"

int main(int argc, char** argv) { return surgseg::run_cli(argc, argv); }
