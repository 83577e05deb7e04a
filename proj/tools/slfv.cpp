#include "slfv/cli.hpp"

int main(int argc, char** argv)
{
    return slfv::cli_main(argc, argv);
}
