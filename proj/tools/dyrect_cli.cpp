#include "dyrect/cli.hpp"

#include <iostream>

int main(int argc, char** argv)
{
    return dyrect::cli_main(argc, argv, std::cout, std::cerr);
}
