#include "csrb/commands.hpp"

int main(int argc, char** argv) { return csrb::run_cli(argc, argv); }
