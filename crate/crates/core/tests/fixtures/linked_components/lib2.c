int lib2_log(int v)
{
    return v;
}

int lib2_flush(void)
{
    return 0;
}
