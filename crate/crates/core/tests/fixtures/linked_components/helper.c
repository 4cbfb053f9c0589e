int helper_setup(int dev)
{
    return dev + 1;
}
