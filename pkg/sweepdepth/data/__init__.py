# Este arquivo vazio permite que o Python trate o diretório como um pacote