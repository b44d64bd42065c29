#include "farm/commands.hpp"

int main(int argc, char** argv) { return farm::run_cli(argc, argv); }
