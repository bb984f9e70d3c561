#include "onli/cli/commands.hpp"

int main(int argc, char** argv) { return onli::run_cli(argc, argv); }
