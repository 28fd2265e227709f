#include "tagforge/cli.hpp"

int main(int argc, char** argv) { return tagforge::run_cli(argc, argv); }
