int core_alloc(int n)
{
    return n;
}
