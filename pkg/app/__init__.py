# p-radius bounds toolkit
