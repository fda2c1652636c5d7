#include "cte/cli.hpp"

int main(int argc, char **argv) { return cte::run_cli(argc, argv); }
