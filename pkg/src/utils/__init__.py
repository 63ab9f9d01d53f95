"""
工具模块包

提供文件操作工具 (file_utils)：编码检测、安全读写、目录创建与文件哈希。
"""
